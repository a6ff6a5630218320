import warnings

# numba's TBB-version notice is environment noise, not a test concern
warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
