"""Tests for atlaslib."""
