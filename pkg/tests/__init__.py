"""Test suite for lightstack."""
