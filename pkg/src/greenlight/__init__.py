"""Traffic-light control testbed: a small microscopic road simulator with a
fixed-time baseline controller and a from-scratch DQN controller."""

__version__ = "0.1.0"
