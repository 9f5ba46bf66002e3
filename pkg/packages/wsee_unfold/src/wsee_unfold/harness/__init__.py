"""Dataset generation and experiments."""
