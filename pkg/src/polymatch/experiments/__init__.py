"""Experiment drivers behind the ``flow``, ``train``, ``compare`` and ``bench`` subcommands."""
