"""Lie-Trotter switching schemes for Markov semigroups on finitely supported
measures, with exact dual bounded-Lipschitz metric evaluation."""

__version__ = "0.1.0"
