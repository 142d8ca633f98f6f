"""Services package: domain algebra, oracles, sampling and learning."""
