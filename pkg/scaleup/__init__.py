# Network scale-up estimation package
