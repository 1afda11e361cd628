"""Channel simulation and the command-line experiment harness."""
