"""Safeguard gateway for ML inference."""
