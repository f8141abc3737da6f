"""Offline speech-to-text toolkit.

Audio is normalized to 16 kHz mono, streamed through a recognizer session,
optionally rescored with a domain n-gram model, then exported or scored.
"""

__version__ = "0.1.0"
