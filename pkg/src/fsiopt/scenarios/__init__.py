"""Experiment definitions: manufactured solution and elastic beam in a channel."""
