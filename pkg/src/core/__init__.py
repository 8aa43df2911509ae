# Core Package - schema, SQL grammar, corpus, evaluation, config
