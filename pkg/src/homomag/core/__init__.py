"""Core numerics for homomag."""
