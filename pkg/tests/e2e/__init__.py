"""End-to-End tests for complete workflows."""
