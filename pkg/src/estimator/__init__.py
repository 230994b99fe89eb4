# Estimator module
