import pandas as pd
df = pd.read_csv("wide12.csv")
for col in df.columns:
    print(col)
summary = df.describe()
