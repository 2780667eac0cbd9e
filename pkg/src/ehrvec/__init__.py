"""Medical concept vectors from EHR event sequences and HF onset prediction."""

__version__ = "0.1.0"
