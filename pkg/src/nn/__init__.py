# Neural network engine
