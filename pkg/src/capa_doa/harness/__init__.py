"""Configuration, experiments and the command-line front end."""
