"""Deep-unfolded power control models and their training."""
