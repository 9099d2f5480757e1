"""rtcwrench: programmable interception engine for the WebRTC signaling plane."""

__version__ = "0.1.0"
