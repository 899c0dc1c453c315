"""The agent society: bus, message types and the four agent roles."""
