"""Volatility forecasting with dilated causal CNNs trained per stock and
across stocks, compared against an automatic ARIMA baseline."""

__version__ = "0.1.0"
