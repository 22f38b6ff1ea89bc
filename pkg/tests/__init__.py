"""
Test package for the muxsim library.
"""
