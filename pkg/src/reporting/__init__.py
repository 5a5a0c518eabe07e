"""Run logs and output writers."""
