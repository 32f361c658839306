"""Scripts directory."""
