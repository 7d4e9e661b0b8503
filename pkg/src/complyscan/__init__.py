"""Compliance checking of regulatory artifacts with LLM providers.

The package is organized as a core pipeline library (corpus, rules, prompting,
providers, verdicts, evaluation, accounting, reporting, pipeline), a FastAPI
service wrapping it (:mod:`complyscan.service`), and a thin-client CLI
(:mod:`complyscan.cli`).
"""

__version__ = "0.1.0"
