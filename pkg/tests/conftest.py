from ecodrive.tuning import tune_process

tune_process()
