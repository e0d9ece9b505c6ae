"""Stochastic symmetric net simulation and statistical model checking of
802.11 / 802.11p RTS/CTS MAC models."""

__version__ = "0.1.0"
