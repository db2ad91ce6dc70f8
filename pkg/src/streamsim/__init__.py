"""Deadline-constrained scheduling and capacity analysis for wireless live video streaming."""
