"""Parameter sweeps and canned scenarios."""
