# AI Package - encoder, probing, graph learner, RGAT, AST decoder, trainer
