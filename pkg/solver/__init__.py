"""Order-condition systems, Newton polishing and homotopy continuation"""
