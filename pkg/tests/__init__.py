"""Test suite for heatmap landmark detection."""
