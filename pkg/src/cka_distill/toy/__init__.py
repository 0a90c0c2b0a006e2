"""Desk-scale teacher/student audio-language models and their training loop."""
