"""Robust transmit beamforming for IRS-aided multi-user MISO downlinks."""
