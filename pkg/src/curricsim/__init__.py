"""Learning-progress curricula, exploration bonuses and a synthetic learner."""

__version__ = "0.1.0"
