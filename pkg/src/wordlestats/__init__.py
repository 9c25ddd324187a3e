"""Statistics toolkit for daily Wordle results: cleaning, word attributes,
report-count forecasting, try-distribution prediction and difficulty classes."""

__version__ = "0.1.0"
