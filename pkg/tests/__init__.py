"""Test suite for the TEOAE prognosis pipeline."""
