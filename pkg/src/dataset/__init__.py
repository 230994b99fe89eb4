# Dataset module
