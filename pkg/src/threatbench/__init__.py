"""threatbench: deterministic synthetic threat-detection benchmark toolkit.

Generates seeded datasets for four security domains (network intrusion,
malware, phishing, insider behavior), trains six model families from scratch,
and evaluates them with a shared metric and explainability suite.
"""

__version__ = "0.1.0"
