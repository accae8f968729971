import pandas as pd
sales = pd.read_csv("sales.csv")
outliers = sales[sales["amount"] > 1000000]
print(outliers.shape)
