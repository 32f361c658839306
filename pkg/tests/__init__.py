"""
ReflectedDiffusion Test Suite

Unit, integration, smoke, end-to-end and regression tests for the
reflected-diffusion library and its command-line harness.
"""
