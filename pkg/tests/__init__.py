"""Test suite for SlowFast-SCI."""
