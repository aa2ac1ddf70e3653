"""Test suite for the weak KAM toolkit."""
