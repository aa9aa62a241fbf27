"""Two-stage PHY-layer spoofing detector for 1090ES ADS-B."""
