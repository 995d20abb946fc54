"""mcmforge: compiler passes, timing models, and a noisy simulator for
dynamic quantum circuits with mid-circuit measurements and classical feedback."""

__version__ = "0.1.0"
