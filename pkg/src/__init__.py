# H-type group heat kernels and log-Sobolev certificates
