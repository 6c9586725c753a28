"""Experiment orchestration: config, pipeline, Monte-Carlo, reports, CLI."""
