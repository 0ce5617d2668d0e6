"""Command line entry point and batch harnesses."""
