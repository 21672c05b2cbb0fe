# Grid operations, NEAT, generators, fitness, composition and export
