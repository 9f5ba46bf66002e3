"""Scenario configuration, channel generation and link-level metrics."""
