"""Integrated channel sounding and communication link simulator."""
