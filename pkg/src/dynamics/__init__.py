"""Overdamped equilibria and Monte-Carlo self-ordering."""
