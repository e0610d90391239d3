"""Monte Carlo checks of Wegner-type estimates for two interacting particles
in a Gaussian random field."""

__version__ = "0.1.0"
