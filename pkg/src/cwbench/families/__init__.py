"""Families index on product torus fibrations."""
