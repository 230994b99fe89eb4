# Acoustics module
