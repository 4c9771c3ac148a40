"""Learn, generalize and simulate variable impedance skills with an extended DMP."""
