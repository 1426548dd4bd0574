"""
Services Package
Semaphore model, explorer, runtime lock and reporting for rwcheck
"""

__version__ = "1.0.0"
