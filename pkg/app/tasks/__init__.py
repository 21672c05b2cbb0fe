# Long-running jobs: training and the experiment runners
