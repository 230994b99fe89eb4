# Simulator module
