# Configuration, units, errors and worker pool shared by the physics layer and the CLI
