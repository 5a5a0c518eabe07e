"""Field solution and optical forces."""
