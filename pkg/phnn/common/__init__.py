"""
Package: phnn.common
Code shared by every command: errors, exit codes, logging and the CLI wiring
"""
