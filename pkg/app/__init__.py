# Integrable solutions of mixed-type functional integral equations on [0, inf)
__version__ = "0.1.0"
