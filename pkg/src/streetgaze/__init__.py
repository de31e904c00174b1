"""streetgaze: gaze-driven street view safety perception analytics.

Pipeline pieces: gaze log ingestion and I-VT fixation classification,
duration-weighted attention heatmaps with rank-CDF normalization and hue
encoding, per-object attention metrics over 150-class segmentation maps,
safe/unsafe grouping from pairwise choices, score-based stratification,
and similarity ranking of machine saliency heatmaps against human ones.
"""

__version__ = "0.1.0"
