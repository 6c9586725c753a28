"""Koopman-model stochastic MPC with distributionally robust constraint tightening."""
__version__ = "0.1.0"
