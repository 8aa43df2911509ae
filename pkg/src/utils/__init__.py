# Utils Package - caches và report
