"""Benchmark scenarios and command-line driver."""
