"""SpO2 estimation from dual-channel PPG with a transferable BiLSTM-attention regressor."""
__version__ = "0.1.0"
