"""Discounted economic MPC without terminal conditions."""
