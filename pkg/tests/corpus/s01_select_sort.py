import pandas as pd
df = pd.read_csv("records.csv")
merge_df = df[["attr_1", "attr_2"]].sort()
