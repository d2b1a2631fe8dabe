"""Discounted forward-reachable-tube value functions on grids."""
