import pandas as pd
df = pd.read_csv("sales.csv")
df["amount"].mean()
total = df["amount"].sum()
print(total)
