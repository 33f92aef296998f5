"""Memory-dimension reduction of q-samples of classical stochastic processes."""
